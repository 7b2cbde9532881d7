import logging

logging.getLogger("l0cert").addHandler(logging.NullHandler())
