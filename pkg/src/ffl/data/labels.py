"""Binarization of graded report labels into the binary diagnosis paradigm."""
from __future__ import annotations

# CheXpert-style labeler output; only an explicit positive counts as positive.
CHEXPERT_CLASSES = {
    "positive": 1,
    "negative": 0,
    "uncertain": 0,
    "not_mentioned": 0,
}
# Numeric encoding used in the released CheXpert CSVs (blank = not mentioned).
_CHEXPERT_CODES = {1.0: "positive", 0.0: "negative", -1.0: "uncertain"}

UKA_CLASSES = {
    "negative": 0,
    "uncertain": 0,
    "mild": 1,
    "moderate": 1,
    "severe": 1,
}
UKA_CARDIOMEGALY_CLASSES = {
    "normal": 0,
    "uncertain": 0,
    "borderline": 1,
    "enlarged": 1,
    "massively_enlarged": 1,
}


def _norm(v: str) -> str:
    return str(v).strip().lower().replace(" ", "_").replace("-", "_")


def binarize_chexpert(v) -> int:
    if v is None or (isinstance(v, str) and not v.strip()):
        return CHEXPERT_CLASSES["not_mentioned"]
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        if v != v:  # NaN: blank cell read by a CSV parser
            return CHEXPERT_CLASSES["not_mentioned"]
        try:
            v = _CHEXPERT_CODES[float(v)]
        except KeyError:
            raise ValueError(f"unknown CheXpert code {v!r}") from None
    key = _norm(v)
    if key not in CHEXPERT_CLASSES:
        raise ValueError(f"unknown CheXpert class {v!r}")
    return CHEXPERT_CLASSES[key]


def binarize_uka(v: str, is_cardiomegaly: bool = False) -> int:
    table = UKA_CARDIOMEGALY_CLASSES if is_cardiomegaly else UKA_CLASSES
    key = _norm(v)
    if key not in table:
        kind = "cardiomegaly" if is_cardiomegaly else "severity"
        raise ValueError(f"unknown UKA {kind} class {v!r}; expected one of {sorted(table)}")
    return table[key]
