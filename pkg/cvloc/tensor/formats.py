WEIGHTS_MAGIC = b"CVWT"
FEATURE_MAP_MAGIC = b"CVFM"
FLOW_MAGIC = b"CVFL"

FORMAT_VERSION = 1

# struct layouts, little-endian
U32 = "<I"
U16 = "<H"
U8 = "<B"
FLOAT32 = "<f4"

# CVWT names
REFINE_CONV7 = "refine.conv7"
REFINE_RES3A = "refine.res3a"
REFINE_RES3B = "refine.res3b"
REFINE_CONV1 = "refine.conv1"

GRU_CONVZ = "gru.convz"
GRU_CONVR = "gru.convr"
GRU_CONVH = "gru.convh"
HEAD_FLOW = "head.flow"
HEAD_SCORE = "head.score"
