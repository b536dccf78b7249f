# Subcommand modules of the DDMP command line
