# Utilities package for Text-SemiSeg
