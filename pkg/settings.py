import os
from dotenv import load_dotenv

load_dotenv()

# Logging
LOG_LEVEL = os.getenv("LEVY_LOG_LEVEL", "WARNING").upper()

# Monte Carlo defaults (CLI flags override these)
MC_PATHS = int(os.getenv("LEVY_MC_PATHS", "100000"))
MC_DT = float(os.getenv("LEVY_MC_DT", "0.001"))
MC_SEED = int(os.getenv("LEVY_MC_SEED", "42"))
MC_CHUNK_STEPS = int(os.getenv("LEVY_MC_CHUNK_STEPS", "4096")) # grid steps drawn per batch
MC_WORKERS = int(os.getenv("LEVY_MC_WORKERS", "1"))
MC_HORIZON_FACTOR = float(os.getenv("LEVY_MC_HORIZON_FACTOR", "200")) # T = factor / psi'(0+)

# Laplace inversion
EULER_TERMS = int(os.getenv("LEVY_EULER_TERMS", "25")) # M, uses 2M+1 transform values
INVERSION_DPS = int(os.getenv("LEVY_INVERSION_DPS", "40"))

# Quadrature and root finding
QUAD_EPSABS = float(os.getenv("LEVY_QUAD_EPSABS", "1e-10"))
TAIL_CUTOFF = float(os.getenv("LEVY_TAIL_CUTOFF", "1e-14"))
PHI_RTOL = float(os.getenv("LEVY_PHI_RTOL", "1e-12"))
PHI_MAXITER = int(os.getenv("LEVY_PHI_MAXITER", "200"))
