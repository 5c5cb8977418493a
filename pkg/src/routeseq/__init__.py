"""Learning shortest road routes with encoder-decoder recurrent networks."""
from .astar import (RouteDataset, RoutePath, astar_search, dijkstra_search, generate_dataset, hop_histogram,
                    load_dataset, path_cost, save_dataset)
from .diffusion import DiffusedKind, DiffusionSchedule, diffused_apply, quadrature_convolve, schedule_default
from .estimator import RouteSeq2Seq
from .evaluation import EvalReport, PathClass, classify, evaluate, rank_analysis
from .graph import Graph, filter_bbox, load_graph, load_minnesota, neighbors
from .seq2seq import (Seq2SeqModel, TrainConfig, bidirectional_predict, decode_greedy, encode, load_model,
                      save_model, step_loss, train)

__version__ = "0.1.0"
