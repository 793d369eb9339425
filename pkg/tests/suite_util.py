"""Pinned degraded-phantom suite shared by the detector property tests and
the acceptance run.  Geometry varies deterministically per index; half the
cases mirror the disc/arc to the darker side of the illumination ramp."""

from ridgekit.phantom import DegradeSpec, PhantomSpec, RidgeArcSpec
from ridgekit.rng import Xoshiro256StarStar

SUITE_DEGRADE = DegradeSpec(
    illum_gradient=0.2, blur_sigma=1.5, noise_sigma=0.02, contrast_factor=0.4
)


def suite_spec(i: int, degrade: DegradeSpec = SUITE_DEGRADE) -> PhantomSpec:
    r = Xoshiro256StarStar(7000 + i)
    mirror = r.uniform_scalar() < 0.5
    cx_lo, cx_hi = (0.55, 0.70) if mirror else (0.30, 0.45)
    cx = r.uniform_scalar(cx_lo, cx_hi)
    cy = r.uniform_scalar(0.40, 0.60)
    return PhantomSpec(
        seed=1000 + i,
        disc_center=(cx, cy),
        vessel_count=r.integer(5, 9),
        ridge_arc=RidgeArcSpec(
            center=(cx + r.uniform_scalar(-0.03, 0.03), cy + r.uniform_scalar(-0.05, 0.05)),
            radius=r.uniform_scalar(0.28, 0.40),
            angle_span=r.uniform_scalar(90, 150),
            width=r.uniform_scalar(5, 10),
            contrast=r.uniform_scalar(0.10, 0.25),
        ),
        degrade=degrade,
    )
