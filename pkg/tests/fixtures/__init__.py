from .traces import *
