# Utility components
