# Tests package for the distributed sampling simulator