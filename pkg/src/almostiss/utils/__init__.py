from .extras import *
from .file_utils import *
from .funcs import *
from .log_utils import *
