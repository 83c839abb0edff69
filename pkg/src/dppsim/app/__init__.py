"""Command line front end, configuration and file output."""
