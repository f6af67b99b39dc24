"""Shoot for kappa_n at n = 101 and print the bracket it came from.

Takes a couple of minutes on one core.
"""
import mpmath

from implode_cert import shooting_solver as ss

res = ss.find_kappa_auto(101, log=print)

print("kappa* =", mpmath.nstr(res.kappa_star, 30))
print("g(kappa*) =", mpmath.nstr(res.g_star, 3))
print("bracket exit classes:", res.bracket_classes)
print("forward route agreement:", res.forward["agreement"])
print("glued curve checks passed:", res.glued["passed"])
