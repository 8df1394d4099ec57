import pandas as pd

# Scenario directories are named after the decommissioned PCI, zero padded so they sort numerically
SCENARIO_PCI_WIDTH = 2


def scenario_label(kind: str, pci: int | None = None) -> str:
    """
    Directory-safe name of a simulated scenario, i.e. "benign", "holdout", "attack_05" or "validation_05"
    """
    if pci is None:
        return kind
    return f"{kind}_{pci:0{SCENARIO_PCI_WIDTH}d}"


def format_pci_ranges(pcis) -> str:
    """
    Compact rendering of a PCI set, i.e. {1, 2, 3, 5} -> "1-3,5"
    """
    ordered = sorted(set(pcis))
    if not ordered:
        return ""
    parts = []
    start = prev = ordered[0]
    for pci in ordered[1:] + [None]:
        if pci is not None and pci == prev + 1:
            prev = pci
            continue
        parts.append(str(start) if start == prev else f"{start}-{prev}")
        if pci is not None:
            start = prev = pci
    return ",".join(parts)


def optional_float(value) -> float | None:
    """
    CSV cells are empty (read back as NaN, or NA in nullable columns) where no value exists
    """
    if value is None or pd.isna(value):
        return None
    return float(value)
