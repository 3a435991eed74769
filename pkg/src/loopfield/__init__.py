"""Planar magnetizations on pixel grids: loop decompositions, exact field operators,
TV-penalised inversion with dual certificates, and TV-minimality certifiers."""
import os as _os

# LOOPFIELD_THREADS caps BLAS/OpenMP width; it only takes effect before numpy is first imported.
if _os.environ.get("LOOPFIELD_THREADS"):
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        _os.environ.setdefault(_var, _os.environ["LOOPFIELD_THREADS"])

from .field import (MeasurementSetup, Reading, Support, adjoint, forward, forward_dipoles,  # noqa: E402
                    forward_edges, kernel_Kv, operator_matrix, plane_setup, scalar_potential)
from .grid import (Grid, OrientedLoop, PixelSet, SegmentFamily, boundary_curves, perimeter,  # noqa: E402
                   pixel_components, segment_separation_check)
from .inversion import (CertReport, Solution, SolveOptions, lambda_path, optimality_certificate,  # noqa: E402
                        solve_ep2, solve_multistart)
from .loops import (CellFunction, LoopDecomposition, coarea_profile, decompose, reconstruct,  # noqa: E402
                    representing_measure, rotated_gradient, stream_function, suplevel_set)
from .measures import (DipoleField, DivergenceError, EdgeMeasure, Magnetization, VertexFunction,  # noqa: E402
                       divergence, edge_measure_from_loop, tv_norm, unit_direction, variational_pairing, w_field)
from .minimality import (certify_tv_minimal, ep1_oracle, kernel_dimension_check, silent_basis,  # noqa: E402
                         treelike_check, variational_certify)

__version__ = "0.1.0"
