# Service modules of the DDMP toolkit
