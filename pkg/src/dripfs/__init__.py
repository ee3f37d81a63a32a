"""Write-only oblivious file synchronization over fixed-size encrypted
backend files."""

from .backend import DirectoryBackend, MemoryBackend, init_backend, open_backend
from .clock import VirtualClock, WallClock
from .codec import FileEntry, Layout
from .errors import DripFSError
from .roclient import ROClient
from .rwclient import PendingBuffer, RWClient, SyncConfig, SyncReport, run_scheduler

__version__ = "0.1.0"
