"""Global profile V(Z), W(Z) for n = 101, written to profile.csv.

Runs the shooting stage first, so expect a few minutes.
"""
import numpy as np

from implode_cert import profile_builder as pb
from implode_cert import shooting_solver as ss

shoot = ss.find_kappa_auto(101)
prof = pb.build_profile(shoot, zmax=1e4)

print("legs:", [leg.name for leg in prof.legs])
print("desing markers:", prof.markers)
print(f"V_inf = {prof.V_inf:.10f} +- {prof.V_inf_err:.1e}")
print(f"W_inf = {prof.W_inf:.8f}")

with open("profile.csv", "w") as fh:
    prof.to_csv(fh)

data = np.loadtxt("profile.csv", delimiter=",", skiprows=1)
Z, V = data[:, 0], data[:, 1]
print("V stays in (-1, 1):", bool(np.all(np.abs(V) < 1)))
print("largest V at Z =", Z[np.argmax(V)])
