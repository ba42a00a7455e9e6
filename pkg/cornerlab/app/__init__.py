"""Corner-ladder spectral laboratory."""
