# Preprocessing components
