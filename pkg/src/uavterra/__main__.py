import sys

from uavterra.cli import main

sys.exit(main(sys.argv[1:]))
