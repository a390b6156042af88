"""Vessel-of-intervention detection for PCI fluoroscopy sequences.

The pipeline pairs a contrast-injected reference sequence (vessel anatomy,
one frame per cardiac phase) with a low-dose navigation sequence (guidewire
advancement).  Per navigation frame it segments guidewire-tip candidates,
matches them into the iso-phase vessel centerline graph, and associates the
matches over time into tracks; the longest track is reported as the vessel
of intervention.
"""

__version__ = "0.1.0"
