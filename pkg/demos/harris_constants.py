"""
The constants behind the minorization argument, for the default model.

The construction steers every trajectory into a small box N around the
point (v*, g*) where the voltage drift vanishes, then spreads it over a
target set. The box needs the drift to point inward on its two vertical
faces; the smallest such speed J* sets the entry time T3 = 1 / (2 J*).
"""
from vgkinetic.model import (ModelParams, harris_constants, inward_speed, max_admissible_g_r,
                             velocity, zero_point)

p = ModelParams()
v_star, g_star = zero_point(p)
print(f"zero point: v* = {v_star}, g* = {g_star}")

# the symmetric 0.05 box is too tall: J changes sign on its left face
for g in (g_star - 0.05, g_star + 0.05):
    print(f"  J(v* - 0.05, {g:.4f}) = {velocity(p, v_star - 0.05, g):+.5f}")
print(f"inward speed of the 0.05 x 0.05 box: {inward_speed(p, v_star, g_star, 0.05, 0.05)}")
print(f"largest admissible g_r for v_r = 0.05: {max_admissible_g_r(p, 0.05):.6f}")

for R in (1.0, 4.0, 9.0):
    h = harris_constants(p, R)
    print(f"\nR = {R}: C(R) = [V_R, V_F) x [{h.g_lo_of_R}, {h.M_of_R}]")
    print(f"  box half-widths v_r = {h.v_r}, g_r = {h.g_r:.6f}, J* = {h.J_star:.6f}")
    print(f"  T1 = {h.T1:.4f}, T2 = {h.T2!r} (3/22 = {3 / 22!r}), T = {h.T:.4f}")
