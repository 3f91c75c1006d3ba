from sqlalchemy import create_engine, MetaData, Table, Column, String, Text, DateTime, Boolean, Index
from pathlib import Path

from ..config import DATA_DIR

# 创建元数据对象
metadata = MetaData()

# 运行记录表；完整记录以 JSON 存在 record 列
run_records = Table(
    'run_records',
    metadata,
    Column('id', String, primary_key=True),
    Column('config_hash', String, nullable=False),
    Column('kind', String, nullable=False),
    Column('started_at', DateTime, nullable=False),
    Column('finished_at', DateTime, nullable=True),
    Column('passed', Boolean, nullable=False),
    Column('record', Text, nullable=False),
    Index('ix_run_records_config_hash', 'config_hash'),
)


def get_engine(data_dir: Path = None):
    """获取数据库引擎"""
    data_dir = Path(data_dir or DATA_DIR)
    data_dir.mkdir(exist_ok=True, parents=True)
    db_path = data_dir / "runs.db"

    # 扫描的多个进程会同时写入，给 SQLite 留出等待锁的时间
    return create_engine(f"sqlite:///{db_path}", future=True,
                         connect_args={"check_same_thread": False, "timeout": 30})


def init_db(data_dir: Path = None):
    """初始化数据库，创建表结构"""
    engine = get_engine(data_dir)
    metadata.create_all(engine)
    return engine
