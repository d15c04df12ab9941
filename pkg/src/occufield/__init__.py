"""Occlusion-aware room acoustic priors and binaural synthesis toolkit."""

__version__ = "0.1.0"

from .geometry import (
    Bounds,
    Pose,
    SceneLayout,
    Vec3,
    WallSegment,
    count_occlusions,
    count_occlusions_many,
    count_occlusions_oracle,
    load_scene,
    scene_from_dict,
)
from .field import (
    FieldGrid,
    FieldParams,
    compute_normalization,
    export_heatmap,
    prior_normalized,
    prior_raw,
    rasterize_field,
)
from .localfield import (
    LocalFieldConfig,
    apply_attention,
    direction_attention,
    ear_directions,
    ear_features,
    fibonacci_directions,
    sample_local_field,
)
from .dsp import (
    AudioClip,
    MaskSet,
    Spectrogram,
    StftConfig,
    apply_masks,
    convolve_rir,
    hilbert_envelope,
    istft,
    read_wav,
    stft,
    write_wav,
)
from .renderer import RenderConfig, analytic_masks, synth_binaural, toy_rir
from .dataset import Dataset, Sample, load_dataset, make_dataset, save_dataset
from .learner import (
    MlpModel,
    PosEncConfig,
    TrainConfig,
    encode_acoustic,
    forward,
    init_model,
    load_checkpoint,
    magnitude_loss,
    positional_encoding,
    save_checkpoint,
    train,
)
from . import metrics
