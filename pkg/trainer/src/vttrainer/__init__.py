"""CVAE trainer producing CFA1 weight bundles for the viscotact runtime."""
