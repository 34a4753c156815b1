"""Configuration records, bundled presets and run-config loading."""
