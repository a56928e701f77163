"""Shared case tables for unit and acceptance tests."""

# raw section title -> expected canonical section set, worked out by hand from
# the rules: lowercase, letters only, split on a standalone "and"/"&",
# number variants folded onto the class surface form.
NORMALIZATION_CASES = [
    ("Conclusion and Future Work", {"conclusion", "future work"}),
    ("Introduction", {"introduction"}),
    ("5. RESULTS:", {"results"}),
    ("Method", {"methods"}),
    ("Methods", {"methods"}),
    ("2 Related Work", {"related work"}),
    ("RELATED WORKS", {"related work"}),
    ("3.1 Experiments", {"experiment"}),
    ("Experimental Setup", {"experimental setup"}),
    ("Results and Discussion", {"results", "discussion"}),
    ("Results & Discussions", {"results", "discussion"}),
    ("Conclusions.", {"conclusion"}),
    ("", set()),
    ("1.2.3", set()),
    ("   ", set()),
    ("Background", {"background"}),
    ("Materials and Methods", {"materials", "methods"}),
    ("MATERIAL AND METHOD", {"materials", "methods"}),
    ("Error Analysis", {"error analysis"}),
    ("Discussion:", {"discussion"}),
    ("II. RELATED WORK", {"related work"}),
    ("A. Proofs", {"proofs"}),
    ("Acknowledgements", {"acknowledgements"}),
    ("Future Works", {"future work"}),
    ("Introduction and Background", {"introduction", "background"}),
    ("Viruses", {"virus"}),
    ("Évaluation", {"evaluation"}),
    ("Related-Work", {"related work"}),
    ("Author's Response", {"authors response"}),
    ("Experiments and Results and Analysis", {"experiment", "results", "analysis"}),
    ("and", set()),
    ("Discussion and", {"discussion"}),
    ("Summary & Outlook", {"summary", "outlook"}),
    ("Data\nCollection", {"data collection"}),
    ("4) Evaluations", {"evaluation"}),
    ("Introduction (continued)", {"introduction continued"}),
]
