import logging
from pathlib import Path
from typing import Sequence, Union

import yaml
from pydantic import ValidationError

from ..exceptions import ConfigError
from ..models.experiment import ExperimentConfig

logger = logging.getLogger(__name__)


def _line_of(node, location: Sequence) -> int:
    """沿着 pydantic 的错误路径在 YAML 节点树里找到最深的对应行（从 1 开始）"""
    line = node.start_mark.line + 1 if node is not None else 0
    for part in location:
        if isinstance(node, yaml.MappingNode):
            match = None
            for key_node, value_node in node.value:
                if key_node.value == str(part):
                    match = (key_node, value_node)
                    break
            if match is None:
                break
            line = match[0].start_mark.line + 1
            node = match[1]
        elif isinstance(node, yaml.SequenceNode) and isinstance(part, int) and part < len(node.value):
            node = node.value[part]
            line = node.start_mark.line + 1
        else:
            break
    return line


def parse_config(text: str, source: str = "<string>") -> ExperimentConfig:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        raise ConfigError(f"{source}: invalid YAML: {getattr(e, 'problem', e)}", field="<document>",
                          line=mark.line + 1 if mark else 0)
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: the document must be a mapping", field="<document>", line=1)

    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        location = [part for part in first["loc"]]
        field = ".".join(str(part) for part in location) or "<document>"
        line = _line_of(yaml.compose(text), location)
        logger.error(f"{source}: {len(e.errors())} validation error(s); first at {field}, line {line}")
        raise ConfigError(f"{source}: {first['msg']}", field=field, line=line)


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    """读取并校验 YAML 实验配置"""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}", field="--config", line=0)
    return parse_config(path.read_text(encoding="utf-8"), source=str(path))
