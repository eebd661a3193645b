from .progress import *
from .util import *
