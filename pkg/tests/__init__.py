# Unit tests for expcp components
