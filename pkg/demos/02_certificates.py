"""Induction checks and far-field barrier certificates at the limit gamma."""
import time

from implode_cert import induction_verifier as iv
from implode_cert.barrier_certifier import certify_all
from implode_cert.parameters import Config, derive_params
from implode_cert.taylor_series import compute_series

P = derive_params(Config())

t0 = time.perf_counter()
ser = compute_series(P, 460)
print(f"series to order 460 in {time.perf_counter() - t0:.1f}s")

rep, consts = iv.verify_all(ser)
print("induction checks passed:", rep.passed)
for c in rep.to_json(digits=20)["checks"]:
    if c["name"].startswith("claim_"):
        print(" ", c["name"], c["lhs"], "<", c["rhs"])

# a single corrupted coefficient is caught, with its index
Uh = [ser.U_hat_at(n) for n in range(451)]
bad = iv.check_base_case(ser, U_hat=iv.mutate_U_hat(Uh, 300))
print("mutated U_hat[300] still passes?", bad.passed)

fb, certs, wall = certify_all(P)
print("e1 =", fb.e1, "  e2 =", fb.e2)
for c in certs:
    print(f"  {c.condition:20s} {c.verdict:9s} margin {c.margin}")
print(f"{len(certs)} certificates in {wall:.3f}s")
