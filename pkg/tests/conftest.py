import sys
from pathlib import Path

# Make the private helper modules (_synth, _oracles) importable from any test.
sys.path.insert(0, str(Path(__file__).parent))
