from convoher2.data.distribution import (
    BCI_CLASS_COUNTS,
    BCI_SPLIT_COUNTS,
    DistributionCheck,
    check_distribution,
)
from convoher2.data.labels import DEFAULT_LABEL_PATTERN, parse_label, sample_id_from_filename
from convoher2.data.manifest import DatasetManifest, ImageRecord, SplitCounts
from convoher2.data.pairing import PairingReport, ScoreMismatch, verify_pairing
from convoher2.data.scan import scan_dataset
from convoher2.data.splitting import allocate_stratified, split_manifest

__all__ = [
    "BCI_CLASS_COUNTS",
    "BCI_SPLIT_COUNTS",
    "DEFAULT_LABEL_PATTERN",
    "DatasetManifest",
    "DistributionCheck",
    "ImageRecord",
    "PairingReport",
    "ScoreMismatch",
    "SplitCounts",
    "allocate_stratified",
    "check_distribution",
    "parse_label",
    "sample_id_from_filename",
    "scan_dataset",
    "split_manifest",
    "verify_pairing",
]
