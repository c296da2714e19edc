"""Lift, drag and wall shear stress from a velocity/pressure field.

Works with anything that provides values and gradients: an analytic flow,
a trained checkpoint or a plain function.  Here we use closed forms whose
answers are known by hand.
"""

import numpy as np

from hiddenflow.autodiff import cos, sin
from hiddenflow.datagen import AnalyticFlow
from hiddenflow.postproc import (
    AnalyticFlowField,
    CallableField,
    RotatedField,
    circle_surface,
    lift_drag,
    segment_surface,
    wall_shear_stress,
)

# pressure falling linearly along x pushes a unit disc with force pi
field = CallableField(lambda t, x, y: (0.0, 0.0, -x))
fl, fd = lift_drag(field, circle_surface(256), re=1.0, t=0.0)
print(f"p = -x on the unit circle: FL = {fl:.3e}, FD = {fd:.12f} (pi = {np.pi:.12f})")

# plane Couette flow u = y: shear stress 2/Re * 1/2 = 1 at Re = 1
wall = segment_surface((0.0, 0.0), (1.0, 0.0), 11, normal=(0.0, 1.0))
tx, ty, wss = wall_shear_stress(CallableField(lambda t, x, y: (y, 0.0, 0.0)), wall, re=1.0, t=0.0)
print(f"Couette wall: WSS min {wss.min():.15f} max {wss.max():.15f}")

# Poiseuille profile u = y(1 - y) at Re = 10: wall shear 0.1
_, _, wss = wall_shear_stress(CallableField(lambda t, x, y: (y * (1 - y), 0.0, 0.0)), wall, re=10.0, t=0.0)
print(f"Poiseuille wall: WSS {wss.mean():.15f}")

# a quarter turn of both the flow and the body swaps drag into lift
tg = AnalyticFlowField(AnalyticFlow("TaylorGreen2D", 7.0))
body = circle_surface(128, 0.8, (0.4, -0.3))
fl, fd = lift_drag(tg, body, 7.0, 0.25)
rl, rd = lift_drag(RotatedField(tg, np.pi / 2), body.rotated(np.pi / 2), 7.0, 0.25)
print(f"Taylor-Green on an off-centre disc: (FL, FD) = ({fl:.6f}, {fd:.6f}), rotated ({rl:.6f}, {rd:.6f})")

# a swirling field with both pressure and viscous loads, converging with resolution
swirl = CallableField(lambda t, x, y: (sin(x) * cos(y), -cos(x) * sin(y), sin(x + 0.3 * y)))
ref = lift_drag(swirl, circle_surface(4096, 0.9, (0.2, 0.1)), 2.0, 0.0)
for n in (8, 16, 32, 64):
    got = lift_drag(swirl, circle_surface(n, 0.9, (0.2, 0.1)), 2.0, 0.0)
    print(f"n = {n:3d}: force error {max(abs(a - b) for a, b in zip(got, ref)):.2e}")
