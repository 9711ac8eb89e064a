"""Class label constants used across the pipeline."""

SECURITY = "security"
NON_SECURITY = "non_security"

# Fixed label order: index 0 is the positive (security) class everywhere a
# vector or matrix is indexed by class.
LABEL_ORDER = (SECURITY, NON_SECURITY)
LABEL_TO_INDEX = {SECURITY: 0, NON_SECURITY: 1}
