import os
from dotenv import load_dotenv

load_dotenv()

# Logging
LOG_LEVEL = os.getenv('LOG_LEVEL', 'INFO')
LOG_FORMAT = os.getenv('LOG_FORMAT', 'text')  # 'text' or 'json'

# Compute
TSS_DEVICE = os.getenv('TSS_DEVICE', 'cpu')
TSS_NUM_THREADS = int(os.getenv('TSS_NUM_THREADS', 0))  # 0 keeps torch's default

# Phantom generation
PHANTOM_NOISE_SIGMA = float(os.getenv('PHANTOM_NOISE_SIGMA', 0.1))
PHANTOM_MAX_ATTEMPTS = int(os.getenv('PHANTOM_MAX_ATTEMPTS', 200))


def deterministic_enabled() -> bool:
    """TSS_DETERMINISTIC=1 forces deterministic kernels; read at call time"""
    return os.getenv('TSS_DETERMINISTIC', '0').strip().lower() in ('1', 'true', 'yes', 'on')
