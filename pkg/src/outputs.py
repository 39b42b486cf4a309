import json
from pathlib import Path

import numpy as np
import pandas as pd
import yaml

from src.log import log_event

# Fixed float format keeps repeated runs byte-identical
FLOAT_FORMAT = "%.12e"


def sanitize_name(name):
    return "".join(c if c.isalnum() or c in "-_." else "_" for c in name)


def ensure_dir(out_dir):
    path = Path(out_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def write_csv(frame: pd.DataFrame, out_dir, name):
    path = ensure_dir(out_dir) / sanitize_name(name)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    log_event(action="write_csv", status="success", file=str(path), rows=len(frame))
    return path


def write_resolved_config(config, out_dir):
    path = ensure_dir(out_dir) / "resolved_config.yml"
    data = config.model_dump(mode="json")
    with open(path, "w") as f:
        yaml.safe_dump(data, f, sort_keys=False)
    log_event(action="write_config", status="success", file=str(path))
    return path


def _plain(value):
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not np.isfinite(value):
        return None
    return value


def write_summary(summary: dict, out_dir, name="summary.json"):
    path = ensure_dir(out_dir) / name
    clean = {k: _plain(v) for k, v in summary.items()}
    with open(path, "w") as f:
        json.dump(clean, f, indent=2, sort_keys=True, default=str)
        f.write("\n")
    log_event(action="write_summary", status="success", file=str(path))
    return path
