from .data import SplitDataset, TestCase, UserRecord, ingest, temporal_split
from .synthetic import SyntheticSpec, generate_synthetic
