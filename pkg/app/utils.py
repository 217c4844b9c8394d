import json
import math
import re
from typing import Any, Dict, Iterable, List, Sequence


def safe_text(value: Any) -> str:
    if value is None:
        return ""
    return str(value).strip()


def slugify_filename(value: str) -> str:
    value = safe_text(value).lower()
    value = re.sub(r"[^a-z0-9]+", "_", value)
    return value.strip("_") or "file"


def pretty_json(data: Dict[str, Any]) -> str:
    return json.dumps(data, indent=2, ensure_ascii=False, sort_keys=True)


def format_float(value: float, precision: int = 17) -> str:
    """Fixed significant digits with a '.' decimal point; -0.0 prints as 0."""
    value = float(value)
    if math.isnan(value):
        return "nan"
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    if value == 0.0:
        value = 0.0
    return f"{value:.{precision}g}"


def csv_lines(header: Sequence[str], columns: Sequence[Iterable[float]], precision: int = 17) -> List[str]:
    """Header plus one comma-separated row per sample."""
    rows = list(zip(*columns))
    out = [",".join(header)]
    for row in rows:
        out.append(",".join(format_float(v, precision) for v in row))
    return out
