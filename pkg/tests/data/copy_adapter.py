"""Identity voice-conversion stand-in: copies input to output.

Usage: copy_adapter.py INPUT OUTPUT DONOR [--fail-on INPUT_STEM]
"""

import shutil
import sys
from pathlib import Path

src, dst, _donor = sys.argv[1:4]
if len(sys.argv) > 5 and sys.argv[4] == "--fail-on" and Path(src).stem == sys.argv[5]:
    sys.stderr.write(f"refusing {src}\n")
    sys.exit(1)
shutil.copyfile(src, dst)
