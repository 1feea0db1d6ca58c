"""Product quantization with Encoding Tree / Encoding Forest distance scans."""

from .bench import BenchReport, bench_scan
from .eforest import EForest, ForestConfig, build_forest, forest_distances
from .errors import EncodingTreeError
from .etree import (
    ChunkOrder,
    ETree,
    TreeStats,
    build_tree,
    construct,
    count_lookups,
    enumerate_leaves,
    sort_encodings,
    stats,
    traverse_distances,
)
from .ivf import InvertedIndex, QueryResult, build_ivf, exhaustive_residual_adc, ivf_search
from .metrics import exact_knn, recall_at, recall_k_at_k
from .quantizer import (
    Codebook,
    EncodedDataset,
    adc_distance,
    adc_scan,
    build_distance_table,
    decode,
    encode,
    quantization_error,
    train_pq,
)
from .synthetic import SyntheticSpec, gen_synthetic
from .vecs import read_vectors, write_vectors

__version__ = "0.1.0"
