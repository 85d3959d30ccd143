import sys

from tbresnet.cli import main

sys.exit(main())
