"""Scripts for the spinfrac package."""
