"""File formats, datasets, configuration and the command line."""
