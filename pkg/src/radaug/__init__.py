"""Structure, augment and score CT findings; model 3D visual-token geometry."""
from .corpus import Corpus, Region, Report, load_corpus, write_corpus
from .triplets import (CanonicalMap, Lexicon, Triplet, canonicalize, extract_triplets,
                       render_question, report_to_triplets, split_sentences)
from .augment import augment_pipeline, bq_augment, keyword_present, nn_augment

__version__ = "0.1.0"
