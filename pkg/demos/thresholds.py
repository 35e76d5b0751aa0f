"""How the observation threshold moves as interventions become harder to observe.

With causes that fire with probability p, each do(X_i = 1) is observed passively
about a fraction p of the time.  Rare causes push more arms below the 1/m line,
so m grows and the causal advantage shrinks.
"""

from __future__ import annotations

from ccpe import predict
from ccpe.instances import parallel

print(" n     p    m  m_eps_delta  predicted ccpe / lucb")
for n in (4, 8):
    for p in (0.5, 0.2, 0.05):
        rep = predict(parallel(n=n, p=p), epsilon=0.02, delta=0.1)
        print(f"{n:2d}  {p:4.2f}  {rep['m']:3d}  {rep['m_eps_delta']:11d}  {rep['ratio']:8.3f}")
