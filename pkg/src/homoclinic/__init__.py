"""Numerical search for homoclinic solutions of  u'' - L(t) u + W_u(t, u) = 0
with subquadratic W(t, u) = a(t)|u|^nu, via a discrete fountain-theorem scheme."""

__version__ = "0.1.0"
