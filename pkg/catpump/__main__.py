"""The entry point of the process."""

import sys

from catpump import queue_framework

sys.exit(queue_framework.main())
