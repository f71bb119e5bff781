use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("grid needs at least {min} cells, got {n_cells}")]
    TooFewCells { n_cells: usize, min: usize },
    #[error("expected {expected} nodal values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("node {index} is not interior to a grid with {n_cells} cells")]
    NotInterior { index: usize, n_cells: usize },
    #[error("line {line}: cannot parse `{content}`")]
    Parse { line: usize, content: String },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NonlinearityError {
    #[error("unknown reaction term `{0}` (expected zero, linear, saturating or sinusoidal)")]
    UnknownKind(String),
    #[error("reaction term `{0}` requires parameter `a`")]
    MissingParameter(String),
    #[error("parameter a = {0} must be finite")]
    BadParameter(f64),
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("Lipschitz bound {bound} violated: |f({x}) - f({y})| / |{x} - {y}| = {ratio}")]
    LipschitzViolation {
        x: f64,
        y: f64,
        ratio: f64,
        bound: f64,
    },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("control schedule is empty")]
    EmptySchedule,
    #[error("control pieces are not contiguous: piece {index} starts at {start} but previous ends at {prev_end}")]
    NonContiguous {
        index: usize,
        start: f64,
        prev_end: f64,
    },
    #[error("control piece {index} has t_end {end} < t_start {start}")]
    ReversedPiece { index: usize, start: f64, end: f64 },
    #[error("control piece {index} has non-finite coefficient values")]
    UnboundedCoefficient { index: usize },
    #[error("initial state violates the homogeneous Dirichlet condition")]
    NotDirichlet,
    #[error("time step {dt} must be positive and at most dt_max = {dt_max}")]
    BadTimeStep { dt: f64, dt_max: f64 },
    #[error("invalid solver configuration: {0}")]
    BadConfig(String),
    #[error(
        "tridiagonal solve failed at dt = {dt} with max|v| = {coeff_max}: \
         the implicit matrix lost diagonal dominance (row {row})"
    )]
    TridiagonalFailure { dt: f64, coeff_max: f64, row: usize },
    #[error("state became non-finite at t = {t}")]
    NonFinite { t: f64 },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProfileError {
    #[error("profile needs n + 2 = {expected} {what}, got {got}")]
    Length {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("zeros must be strictly increasing in (0, 1)")]
    ZerosNotIncreasing,
    #[error("slopes must be ±1 and alternate, failing at index {0}")]
    SlopesNotAlternating(usize),
    #[error("curvature at index {index} is {value}, expected one of -1, 0, 1")]
    BadCurvature { index: usize, value: f64 },
    #[error("endpoint curvatures must vanish")]
    EndpointCurvature,
    #[error("plateau radius {rho} outside (0, {max}] (half of the smallest gap)")]
    RhoOutOfRange { rho: f64, max: f64 },
    #[error("grid spacing {h} too coarse for plateau radius {rho} (need h <= rho / 8)")]
    GridTooCoarse { h: f64, rho: f64 },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrackError {
    #[error("state is below the noise floor everywhere; no sign pattern")]
    Degenerate,
    #[error("ambiguous sign pattern between x = {left} and x = {right}; grid too coarse")]
    Ambiguous { left: f64, right: f64 },
    #[error("sign pattern mismatch: {0}")]
    PatternMismatch(String),
    #[error("curves {left} and {right} came within {gap} (< {limit}) at t = {t}")]
    CurveMerge {
        left: usize,
        right: usize,
        gap: f64,
        limit: f64,
        t: f64,
    },
    #[error("curve {index} reached the boundary (gap {gap} < {limit}) at t = {t}")]
    BoundaryExit {
        index: usize,
        gap: f64,
        limit: f64,
        t: f64,
    },
    #[error("number of sign changes changed from {before} to {after} at t = {t}")]
    CountChanged { before: usize, after: usize, t: f64 },
    #[error(
        "|w_x| = {value} < {limit} at curve {index}, t = {t}: outside the tracking validity window"
    )]
    SmallDerivative {
        index: usize,
        t: f64,
        value: f64,
        limit: f64,
    },
    #[error("trace and snapshots are misaligned: {0}")]
    Misaligned(String),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SteerError {
    #[error("source and target sign patterns differ: {0}")]
    PatternMismatch(String),
    #[error("ratio target/source unbounded or non-positive at x = {x}")]
    PsiUnbounded { x: f64 },
    #[error("tolerance eta = {0} must be positive")]
    BadTolerance(f64),
    #[error(
        "back-off reached durations {floor} without meeting the bound (best slack {best_slack})"
    )]
    BackoffExhausted { floor: f64, best_slack: f64 },
    #[error("cut-off set misses {missing} of the target in L² (limit {limit})")]
    CutTooCoarse { missing: f64, limit: f64 },
    #[error(transparent)]
    Track(#[from] TrackError),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StrategyError {
    #[error("invalid strategy configuration: {0}")]
    BadConfig(String),
    #[error("hypothesis violated: {0}")]
    Hypothesis(String),
    #[error("phase budget of {0} rounds exhausted before all zeros reached their targets")]
    BudgetExhausted(usize),
    #[error("gap {gap} below 8h = {limit} in round {round}; refine the grid")]
    GapTooSmall { round: usize, gap: f64, limit: f64 },
    #[error("round {round}: {source}")]
    Round {
        round: usize,
        source: Box<StrategyError>,
    },
    #[error("final L² error {error} exceeds eta = {eta}")]
    FinalBound { error: f64, eta: f64 },
    #[error("steered state starts curve {index} at speed {speed} instead of {mu} even at the shortest steering durations")]
    SpeedMismatch { index: usize, speed: f64, mu: f64 },
    #[error("no surrogate target within eta/3 = {limit} (best {best})")]
    Surrogate { best: f64, limit: f64 },
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error(transparent)]
    Track(#[from] TrackError),
    #[error(transparent)]
    Steer(#[from] SteerError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("cannot parse scenario: {0}")]
    Parse(String),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("{which}: {reason}")]
    Field { which: &'static str, reason: String },
    #[error("{which}: interval signs must be ±1 and alternate, failing at interval {index}")]
    NotAlternating { which: &'static str, index: usize },
    #[error(transparent)]
    Strategy(#[from] StrategyError),
}
