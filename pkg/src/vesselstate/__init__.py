"""Wave-aware 6-DOF vessel state estimation and prediction."""

__version__ = "0.1.0"
