"""
Data preprocessing and ingestion module
Loads longitudinal CSV datasets with their wave maps and validates them before discovery
"""
import logging
import os
from typing import Iterable, Optional, Tuple

import pandas as pd

from cim import WaveAssignment
from graph_core import InputError, canonical_labels
from graph_io import read_waves, write_waves

logger = logging.getLogger(__name__)


class DataPreprocessor:
    """Handles dataset loading, validation and wave handling"""

    def __init__(self, verbose: bool = True):
        self.verbose = verbose

    def _say(self, message: str):
        if self.verbose:
            print(message)

    def load_dataset(self, data_path: str, waves_path: Optional[str] = None,
                     waves: Optional[WaveAssignment] = None) -> Tuple[pd.DataFrame, WaveAssignment]:
        """Load a CSV (header row required) and the wave map covering every column"""
        if not os.path.exists(data_path):
            raise InputError(f"Dataset file not found: {data_path}")
        if waves is None:
            if waves_path is None:
                raise InputError("A waves file is required to ingest a dataset")
            waves = read_waves(waves_path)

        try:
            raw = pd.read_csv(data_path, dtype=str, keep_default_na=False)
        except (pd.errors.EmptyDataError, pd.errors.ParserError) as e:
            raise InputError(f"Could not parse {data_path}: {e}")
        df = self.clean_dataset(raw)

        unmapped = [c for c in df.columns if c not in waves]
        if unmapped:
            raise InputError(f"Column(s) without a wave assignment: {unmapped}")
        extra = [x for x in waves if x not in df.columns]
        if extra:
            logger.warning("Wave map lists variables absent from %s: %s", data_path, extra)
        waves = WaveAssignment({c: waves[c] for c in df.columns})
        waves.require_covers(df.columns)

        self._say(f"✓ Loaded {len(df)} records over {df.shape[1]} variables in {waves.n_waves} waves")
        return df, waves

    def clean_dataset(self, raw: pd.DataFrame) -> pd.DataFrame:
        """Validate cells: every cell present and numeric; errors name the CSV row and column"""
        if raw.columns.empty:
            raise InputError("Dataset has no header row")
        duplicated = raw.columns[raw.columns.duplicated()].tolist()
        if duplicated:
            raise InputError(f"Duplicate column(s): {duplicated}")
        if raw.empty:
            raise InputError("Dataset has no rows")

        df = pd.DataFrame(index=raw.index)
        for column in raw.columns:
            text = raw[column].str.strip()
            missing = text.eq("") | text.str.lower().isin(["na", "nan", "null"])
            if missing.any():
                row = int(missing.idxmax()) + 2  # header is line 1
                raise InputError(f"Missing value at row {row}, column '{column}'")
            values = pd.to_numeric(text, errors="coerce")
            bad = values.isna()
            if bad.any():
                index = bad.idxmax()
                raise InputError(f"Non-numeric value '{raw.at[index, column]}' at row {int(index) + 2}, column '{column}'")
            df[column] = values.astype(float)
        return df

    def merge_waves(self, waves: WaveAssignment, groups: Iterable[Iterable[int]]) -> WaveAssignment:
        """Collapse each listed group of waves into one (e.g. [[2, 3]])"""
        for group in groups:
            group = list(group)
            unknown = set(group) - set(waves.values())
            if unknown:
                raise InputError(f"Cannot merge unknown wave(s): {sorted(unknown)}")
            waves = waves.merged(group)
        self._say(f"✓ Merged waves; {waves.n_waves} waves remain")
        return waves

    def save_dataset(self, df: pd.DataFrame, waves: WaveAssignment, data_path: str, waves_path: str):
        folder = os.path.dirname(data_path)
        if folder:
            os.makedirs(folder, exist_ok=True)
        df.to_csv(data_path, index=False, float_format="%.10g")
        write_waves(waves.to_dict(), waves_path)
        self._say(f"✓ Dataset saved to {data_path} ({len(df)} records)")


def ingest_csv(path: str, waves_path: str) -> Tuple[pd.DataFrame, WaveAssignment]:
    return DataPreprocessor(verbose=False).load_dataset(path, waves_path)


def parse_wave_groups(text: str) -> list:
    """'2,3' -> [[2, 3]]; '2,3;4,5' -> [[2, 3], [4, 5]]"""
    try:
        return [[int(w) for w in group.split(",") if w.strip()] for group in text.split(";") if group.strip()]
    except ValueError:
        raise InputError(f"Malformed wave groups '{text}'; expected e.g. 2,3")


if __name__ == "__main__":
    import sys

    if len(sys.argv) != 3:
        print("usage: python data_preprocessing.py <data.csv> <waves.json>")
        sys.exit(2)
    preprocessor = DataPreprocessor()
    df, waves = preprocessor.load_dataset(sys.argv[1], sys.argv[2])
    print("\nWave Information:")
    for w in sorted(set(waves.values())):
        print(f"Wave {w}: {canonical_labels(x for x in waves if waves[x] == w)}")
