# Visualization components
