"""nucleusnet: a from-scratch CNN engine and CLI for end-to-end sound
classification directly on raw audio waveforms.

The engine implements multi-branch "inception nucleus" 1D/2D convolutional
networks with their training recipe (Adam, glorot init, L2 penalty), a WAV
ingestion pipeline, binary checkpoints, and analysis exports (first-layer
filters, penultimate embeddings).
"""

from .audio import decode_wav, prepare, resample, standardize, write_wav
from .checkpoint import (LoadedCheckpoint, checkpoint_bytes, load_checkpoint,
                         load_checkpoint_bytes, save_checkpoint)
from .data import (DatasetManifest, Sample, load_manifest, load_samples,
                   make_splits, synth_dataset, synth_raw)
from .errors import (BuildError, CheckpointError, DataError, NumericalError,
                     ShapeError, WavError)
from .model import (ARCH_NAMES, LayerSpec, Model, ModelConfig, ParamStore, Tape,
                    build, count_params, miniature_config, minimum_input_length,
                    standard_config)
from .ops import (BatchNormState, Conv1DParams, Conv2DParams, batchnorm_backward,
                  batchnorm_forward, conv1d_backward, conv1d_forward,
                  conv2d_backward, conv2d_forward, gap_backward, gap_forward,
                  init_batchnorm_state, maxpool1d_backward, maxpool1d_forward,
                  maxpool2d_backward, maxpool2d_forward, relu_backward,
                  relu_forward, softmax, softmax_xent)
from .optim import (AdamState, RegConfig, adam_step, add_l2_grad, glorot_bound,
                    glorot_init, init_adam)
from .tensor import Tensor, concat_channels, reshape_to_image, slice_channels, zeros
from .train import EpochReport, EvalResult, TrainConfig, evaluate, train

__version__ = "0.1.0"
