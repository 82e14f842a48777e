import sys
from dsmin.main import main

sys.exit(main())
