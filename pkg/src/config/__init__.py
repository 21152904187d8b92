"""Runtime settings read from the environment"""

import os

# Worker pool
MAX_WORKERS = int(os.environ.get("MAX_WORKERS", 4))

# Output
OUTPUT_DIR = os.environ.get("OUTPUT_DIR", "data")

# Logging
LOG_LEVEL = os.environ.get("LOG_LEVEL", "INFO")
