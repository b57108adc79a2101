"""qgain - quality gain analysis of weighted recombination evolution strategies."""

__version__ = "0.1.0"
