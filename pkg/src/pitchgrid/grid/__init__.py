"""Network models, power flow, Kron reduction and frequency-dependent equivalents."""
