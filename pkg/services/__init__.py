# Services package for Text-SemiSeg
