"""Sonic-point power series at the limit gamma, exactly in Q[sqrt15]."""
import mpmath

from implode_cert.parameters import Config, derive_params
from implode_cert.taylor_series import compute_series, residual

P = derive_params(Config())  # d = 4, p = 7, gamma = ell**(-1/2)
print("ell =", P.ell, " gamma =", P.gamma, " A =", P.A)
print("U1 = A:", P.U1 == P.A)

ser = compute_series(P, 60)
for n in (0, 1, 2, 3, 10):
    print(f"U_{n} =", ser.U[n])

# every coefficient closes the recursion with zero residual
print("residual zero up to 60:", all(residual(ser, n) == 0 for n in range(1, 61)))

# renormalized coefficients grow roughly like (C*/4) n
with mpmath.workdps(20):
    for n in (20, 40, 60):
        r = (ser.U_hat_at(n) / ser.U_hat_at(n - 1)).to_mpf() / n
        print(f"U_hat ratio / n at n={n}:", mpmath.nstr(r, 8))
