"""Point heat source identification from boundary flux data on bounded domains."""
