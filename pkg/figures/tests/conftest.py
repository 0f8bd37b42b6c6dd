import sys
from pathlib import Path

FIGURES_DIR = Path(__file__).resolve().parents[1]
if str(FIGURES_DIR) not in sys.path:
    sys.path.insert(0, str(FIGURES_DIR))
