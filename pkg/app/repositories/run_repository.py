import json
import logging
from datetime import datetime, timedelta
from pathlib import Path
from typing import List, Optional

from sqlalchemy import select, desc
from sqlalchemy.exc import OperationalError, SQLAlchemyError
from tenacity import retry, retry_if_exception, stop_after_attempt, wait_exponential

from ..config import DATA_DIR
from ..models.experiment import RunRecord
from ..utils.db_utils import init_db, run_records

logger = logging.getLogger(__name__)


def _is_locked(error: BaseException) -> bool:
    return isinstance(error, OperationalError) and "locked" in str(error).lower()


# 并行扫描时 SQLite 可能短暂加锁
_retry_when_locked = retry(
    retry=retry_if_exception(_is_locked),
    stop=stop_after_attempt(5),
    wait=wait_exponential(multiplier=0.1, max=2.0),
    reraise=True,
)


class RunRepository:
    """运行记录存储库，处理SQLAlchemy Core操作"""

    def __init__(self, data_dir: Optional[Path] = None):
        self.data_dir = Path(data_dir or DATA_DIR)
        # 确保数据库结构初始化
        self.engine = init_db(self.data_dir)

        # 创建备份目录
        self.backup_dir = self.data_dir / "backups"
        self.backup_dir.mkdir(exist_ok=True, parents=True)

    @_retry_when_locked
    def save_run(self, record: RunRecord) -> str:
        """保存运行记录到数据库和JSON备份"""
        values = {
            'id': record.id,
            'config_hash': record.config_hash,
            'kind': record.kind,
            'started_at': record.started_at,
            'finished_at': record.finished_at,
            'passed': record.passed,
            'record': json.dumps(record.to_dict()),
        }
        try:
            with self.engine.begin() as conn:
                conn.execute(run_records.insert().values(**values))
        except SQLAlchemyError as e:
            logger.error(f"Error saving run record {record.id}: {e}")
            raise

        self._backup_to_json(record)
        return record.id

    def get_run_by_id(self, run_id: str) -> Optional[RunRecord]:
        """根据ID获取单条运行记录"""
        query = select(run_records).where(run_records.c.id == run_id)
        with self.engine.connect() as conn:
            row = conn.execute(query).first()
        if not row:
            return None
        return RunRecord.from_dict(json.loads(row.record))

    def list_recent(self, days: int = 30, limit: int = 50) -> List[RunRecord]:
        """获取最近的运行记录，按开始时间倒序"""
        start_time = datetime.utcnow() - timedelta(days=days)
        query = (
            select(run_records)
            .where(run_records.c.started_at >= start_time)
            .order_by(desc(run_records.c.started_at))
            .limit(limit)
        )
        with self.engine.connect() as conn:
            rows = conn.execute(query).fetchall()
        return [RunRecord.from_dict(json.loads(row.record)) for row in rows]

    def list_by_config_hash(self, config_hash: str, limit: int = 50) -> List[RunRecord]:
        """同一配置的所有运行"""
        query = (
            select(run_records)
            .where(run_records.c.config_hash == config_hash)
            .order_by(desc(run_records.c.started_at))
            .limit(limit)
        )
        with self.engine.connect() as conn:
            rows = conn.execute(query).fetchall()
        return [RunRecord.from_dict(json.loads(row.record)) for row in rows]

    @_retry_when_locked
    def delete_run(self, run_id: str) -> bool:
        """删除运行记录"""
        with self.engine.begin() as conn:
            result = conn.execute(run_records.delete().where(run_records.c.id == run_id))
            return result.rowcount > 0

    def _backup_to_json(self, record: RunRecord) -> None:
        """备份运行记录到按日期命名的JSON文件"""
        date_str = record.started_at.strftime("%Y-%m-%d")
        backup_file = self.backup_dir / f"{date_str}.json"

        # 读取现有备份或创建新文件
        if backup_file.exists():
            with open(backup_file, "r", encoding="utf-8") as f:
                try:
                    data = json.load(f)
                except json.JSONDecodeError:
                    data = []
        else:
            data = []

        data.append(record.to_dict())
        with open(backup_file, "w", encoding="utf-8") as f:
            json.dump(data, f, ensure_ascii=False, indent=2)
