"""Task inference method implementations."""
