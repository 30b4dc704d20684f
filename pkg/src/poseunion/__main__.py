import sys

from poseunion.cli import main

sys.exit(main())
