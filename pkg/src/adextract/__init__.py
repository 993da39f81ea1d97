"""Drug-attribute relation extraction from clinical notes with standoff annotations."""

__version__ = "0.1.0"
