"""Statistical beamforming and RIS phase design for RIS-aided MISO downlinks."""
