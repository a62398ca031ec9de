"""
settings.py — Django project configuration for MarrProbe

What this file configures
===============================================================================
- Core Django wiring (INSTALLED_APPS, DB stub for the test runner, LOGGING)
- The MARRPROBE dictionary: every tunable default of the probing pipeline
  (tensor precision, model presets, depth band, camera, loss flags, optimizer,
  dataset recipe, analysis thresholds, output root)

How environment variables drive behavior
===============================================================================
MARRPROBE_OUT         -> Output root for datasets, runs, dumps and reports.
MARRPROBE_PRECISION   -> "float32" (training, default) or "float64" (gradient checks).
MARRPROBE_LOG_LEVEL   -> Level of the per-app loggers (default INFO).
MARRPROBE_RUN_SLOW    -> When true, the long seeded training tests are run.
MARRPROBE_SEED        -> Default seed for every command (default 7).
DJANGO_DEBUG          -> Kept for parity with manage.py tooling; no effect on numerics.
DJANGO_SECRET_KEY     -> Required by Django; a fixed dev key is used when DEBUG=True.

Why there is a database entry
===============================================================================
- The pipeline stores nothing in a database. Django's test runner still expects a
  DATABASES mapping, so the SQLite default stays. SimpleTestCase suites never open it.

Quick reference of MARRPROBE keys
===============================================================================
PRECISION          -> dtype used for new tensors (see numerics.tensor.precision).
PRESET             -> "desk" | "paper" | "tiny" (see wint.config; "full" also names "paper").
DEPTH_RANGE        -> (d_min, d_max) canonical depth band of every probe.
DEPTH_SCALE        -> canonical z units per depth unit inside the renderer.
BACKGROUND         -> gray level of pixels covered by no triangle.
COVERAGE_MODE      -> "ignore" (drop uncovered pixels from the loss) or "penalize".
SIGMA_MIN          -> floor of the confidence map.
TEMPERATURE        -> softmax temperature of the straight-through hardmax backward.
LR / BATCH_SIZE / EPOCHS / CLIP_NORM / ADAM_*  -> optimizer and loop constants.
YAWS               -> multi-view yaw set of the synthetic dataset.
TRAIN_FRACTION     -> identity split fraction.
DEPTH_3D_THRESHOLD / NORMAL_25D_THRESHOLD -> 2D / 2.5D / 3D classification.
YAW_BINS           -> yaw intervals of the view-tuning report.
"""

from pathlib import Path
import os


# ---------------------------
# Helpers for env parsing
# ---------------------------
def _get_bool(env_key: str, default: bool = False) -> bool:
    """Parse booleans from env like '1', 'true', 'yes'."""
    raw = os.environ.get(env_key, str(default))
    return str(raw).strip().lower() in {"1", "true", "yes", "on"}

def _get_list(env_key: str, default=None):
    """Parse comma-separated lists from env (e.g., 'a,b')."""
    if default is None:
        default = []
    raw = os.environ.get(env_key)
    if not raw:
        return default
    return [item.strip() for item in raw.split(",") if item.strip()]

def _get_float(env_key: str, default: float) -> float:
    raw = os.environ.get(env_key)
    return float(raw) if raw not in (None, "") else default

def _get_int(env_key: str, default: int) -> int:
    raw = os.environ.get(env_key)
    return int(raw) if raw not in (None, "") else default


BASE_DIR = Path(__file__).resolve().parent.parent

DEBUG = _get_bool("DJANGO_DEBUG", True)

SECRET_KEY = os.environ.get("DJANGO_SECRET_KEY") or (
    "marrprobe-offline-dev-key-not-used-for-anything-secret" if DEBUG else None
)
if not SECRET_KEY:
    raise RuntimeError("DJANGO_SECRET_KEY must be set when DJANGO_DEBUG=False")

ALLOWED_HOSTS = []

INSTALLED_APPS = [
    # Django core (management commands + test runner only)
    'django.contrib.contenttypes',

    # Local apps, bottom-up
    'numerics',
    'wint',
    'probes',
    'render',
    'train',
    'data',
    'analysis',
    'cli',
]

MIDDLEWARE = []

# SQLite stub so `manage.py test` boots; no app defines models.
DATABASES = {
    "default": {
        "ENGINE": "django.db.backends.sqlite3",
        "NAME": BASE_DIR / "db.sqlite3",
    }
}

LANGUAGE_CODE = 'en-us'
TIME_ZONE = 'UTC'
USE_I18N = False
USE_TZ = True

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'


# ----------------------------------------------------------------------------- #
# Pipeline defaults                                                             #
# ----------------------------------------------------------------------------- #
MARRPROBE = {
    # Output root; every command writes under here unless given --out
    "OUT": os.environ.get("MARRPROBE_OUT", str(BASE_DIR / "runs")),
    "SEED": _get_int("MARRPROBE_SEED", 7),

    # numerics
    "PRECISION": os.environ.get("MARRPROBE_PRECISION", "float32"),
    "GRADCHECK_EPS": 1e-4,

    # wint
    "PRESET": os.environ.get("MARRPROBE_PRESET", "desk"),
    "PROBE_BOTTOM": _get_bool("MARRPROBE_PROBE_BOTTOM", False),

    # probes
    "DEPTH_RANGE": (0.9, 1.1),
    "TEMPERATURE": 1.0,
    "SEGMENT_FRACTIONS": (3 / 8, 3 / 8, 1 / 8, 1 / 8),

    # render
    "DEPTH_SCALE": 5.0,
    "BACKGROUND": 0.5,
    "COVERAGE_MODE": os.environ.get("MARRPROBE_COVERAGE_MODE", "ignore"),

    # train
    "SIGMA_MIN": 1e-3,
    "LR": _get_float("MARRPROBE_LR", 1e-4),
    "BATCH_SIZE": _get_int("MARRPROBE_BATCH_SIZE", 16),
    "EPOCHS": _get_int("MARRPROBE_EPOCHS", 30),
    "LEVEL_WEIGHTS": {"bottom": 1.0, "low": 1.0, "mid": 1.0, "high": 1.0},
    "CLIP_NORM": 5.0,
    "ADAM_BETAS": (0.9, 0.999),
    "ADAM_EPS": 1e-8,
    "CHECKPOINT_EVERY": 1,
    "HELDOUT_SLICE": 32,

    # data
    "IDENTITIES": 20,
    "IMAGE_SIZE": 64,
    "YAWS": (0, 15, -15, 30, -30, 45, -45, 60, -60, 75, -75, 90, -90),
    "TRAIN_FRACTION": 0.9,
    "LIGHT": (0.4, 0.6, 0.0, 0.5),

    # analysis
    "DEPTH_3D_THRESHOLD": 15e-3,
    "NORMAL_25D_THRESHOLD": 10e-3,
    "YAW_BINS": ((-60, -35), (-35, -5), (-5, 5), (5, 35), (35, 60)),
    "YAW_HIST_STEP": 5,
    "MASK_ANALYSIS": _get_bool("MARRPROBE_MASK_ANALYSIS", False),
    "TUNING_TOP_N": 8,

    "RUN_SLOW_TESTS": _get_bool("MARRPROBE_RUN_SLOW", False),
}

LOG_LEVEL = os.environ.get("MARRPROBE_LOG_LEVEL", "INFO").upper()

LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "stamped": {"format": "%(asctime)s %(levelname)s %(name)s: %(message)s"},
    },
    "handlers": {
        "console": {"class": "logging.StreamHandler", "formatter": "stamped"},
    },
    "loggers": {
        "django": {
            "handlers": ["console"],
            "level": "WARNING",
        },
        **{
            app: {"handlers": ["console"], "level": LOG_LEVEL, "propagate": False}
            for app in ("numerics", "wint", "probes", "render", "train", "data", "analysis", "cli")
        },
    },
}
