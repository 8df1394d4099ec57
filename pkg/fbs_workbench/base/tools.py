import hashlib
import json
import os

import pandas as pd

# Nothing from fbs_workbench may be imported here, so this module is safe to import from anywhere


def stable_hash(payload: dict) -> str:
    """
    SHA-256 of the canonical JSON form of `payload`, used to tag manifests with the config that produced them
    """
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def write_frame(frame: pd.DataFrame, path: str) -> None:
    """
    Write a CSV so that identical frames always give identical bytes: header row, '.' decimal point, no index,
    missing values as empty fields and floats in their shortest round-trip representation.
    """
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    frame.to_csv(path, index=False, lineterminator="\n", na_rep="")


def read_frame(path: str) -> pd.DataFrame:
    return pd.read_csv(path, float_precision="round_trip")
