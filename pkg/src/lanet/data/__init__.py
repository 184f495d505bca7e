from lanet.data.augment import augment, sample_seed
from lanet.data.dataset import FundusDataset, load_sample
from lanet.data.manifest import (
    DATASET_KINDS,
    SPLITS,
    REFERENCE_COUNTS,
    DatasetManifest,
    ManifestEntry,
    ManifestError,
    build_manifest,
)
from lanet.data.preprocess import (
    FundusSample,
    ImageReadError,
    PreprocessError,
    black_border_box,
    crop_black_border,
    encode_mask,
    enhance,
    pad_to_square,
    preprocess,
    read_image,
    resize_image,
    resize_mask,
)
from lanet.data.synthetic import make_synthetic_ddr, render_fundus
