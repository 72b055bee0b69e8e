"""Few-shot transfer learning for goal recognition on grid-world trails.

Pipeline: occupancy-grid maps and scenarios (gridworld), noisy near-optimal
trajectories (planner), 5-channel trail bitmaps (encoder), balanced example
sets (dataset), a from-scratch convolutional engine (nn), the 7-block
recognizer with base training and few-shot adaptation (recognizer), and the
sweep/report harness plus CLI (harness, cli).
"""

from .gridworld import (GridMap, MapError, Scenario, ScenarioError, downscale,
                        generate_map, largest_component, parse_movingai,
                        parse_scenario, sample_scenario, serialize_scenario,
                        to_movingai)
from .planner import NoisyHeuristicParams, Path, PlannerError, astar_noisy, truncate
from .encoder import EncodeError, TrailBitmap, encode, render_ppm
from .dataset import (OBSERVABILITIES, DatasetError, DatasetSpec, Example,
                      FormatError, child_seed, generate, load, load_file,
                      make_shots, plan_paths, save, save_file)
from .nn import AdamState, ConvBlock, NNError, NonFiniteError, Param
from .recognizer import (Network, RecognizerError, TransferConfig, adapt,
                         evaluate, load_checkpoint, load_network, predict,
                         save_checkpoint, save_network, train_base)
from .harness import (HarnessError, SweepReport, activation_maps,
                      dump_activations, emit_report, sweep_frozen, sweep_lr,
                      sweep_shots)

__version__ = "0.1.0"
