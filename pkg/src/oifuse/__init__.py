"""oifuse: optimal-interpolation fusion of coarse and fine reflectance series.

The heart of the package is a stateless per-month filter: a monthly
climatology belief and a cross-sensor regression belief are merged by
inverse-variance weighting, then corrected toward the month's observation
when one exists. Around it sit the compositing/collocation ingest layer,
the climatology and fusion builders, a seeded synthetic-site generator,
and a leave-one-out evaluation harness. See the demos/ scripts for
worked tours of each capability.
"""

from .climatology import Climatology, build_climatology, load_climatology, save_climatology
from .errors import (
    ConfigError,
    EmptyArchiveError,
    EmptyInputError,
    GeometryMismatchError,
    InsufficientDataError,
    LengthMismatchError,
    NoOverlapError,
    OifuseError,
    UnsortedInputError,
)
from .evaluation import (
    LoocvResult,
    MetricsReport,
    MetricsRow,
    estimate_r,
    leave_one_out,
    metrics,
    render_metrics_table,
    write_metrics_csv,
)
from .filtering import (
    R_FLOOR,
    VAR_FLOOR,
    FilteredGrid,
    FilteredStep,
    FilterInputs,
    GaussianBelief,
    Observation,
    ObservationModel,
    filter_grid,
    filter_series,
    filter_step,
    kalman_gain,
    predict,
    update,
)
from .fusion import (
    CollocatedPair,
    FusionGrid,
    FusionModel,
    apply_fusion,
    fit_fusion_grid,
    fit_fusion_model,
    load_fusion_grid,
    save_fusion_grid,
)
from .grids import (
    GridGeometry,
    QualityPolicy,
    SceneGrid,
    apply_quality_mask,
    collocate,
    monthly_composite,
    read_grid,
    write_grid,
)
from .pipeline import RunConfig, SiteWindow
from .series import (
    CompositeStack,
    PixelSeries,
    extract_series,
    read_series_csv,
    stack_from_composites,
    write_series_csv,
)
from .synthetic import BandSpec, SyntheticConfig, SyntheticSite, generate_site, write_site

__version__ = "0.1.0"
