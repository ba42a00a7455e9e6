# Numerical services of the corner-ladder laboratory: special functions,
# angular modes, the 1D model, the 2D solver and the water-wave instance,
# plus result emission and the acceptance suite
