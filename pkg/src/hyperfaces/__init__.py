"""Second moments of face contents of typical faces of Poisson hyperplane tessellations."""
