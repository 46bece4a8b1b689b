"""Closed word lists for the dataset statistics report.

The verb list is a fixed set of ~200 common English verbs (instruction
openers included); detection is approximate by design — no POS tagger.
"""

COMMON_VERBS = frozenset(
    """
    add analyze annotate answer apply arrange ask assess assign associate
    build calculate categorize change check choose cite claim classify
    collect combine compare compile complete compose compute conclude
    condense consider construct convert correct count cover create
    decide define demonstrate derive describe design detect determine
    develop diagnose differentiate discuss distinguish divide draft draw
    edit elaborate eliminate estimate evaluate examine explain explore
    express extract figure fill filter find finish fix form formulate
    generate give group guess highlight identify illustrate imagine
    improve include indicate infer interpret introduce investigate
    judge justify label link list locate make map mark match measure
    mention merge modify name note obtain order organize outline
    paraphrase parse perform pick plan point predict prepare present
    produce propose prove provide put rank rate read recall recognize
    recommend record reduce refer reformulate remove rename reorder
    repeat rephrase replace report represent request research resolve
    respond restate retrieve return review revise rewrite say score
    search select separate show simplify solve sort specify split state
    structure suggest summarize tag take tell test track transform
    translate turn underline use validate verify write
    annotate abbreviate assemble brainstorm capitalize clarify cluster
    code compress contrast convey copy decide decode deduce describe
    detail discover double emphasize encode enumerate expand explain
    flag gather generalize hypothesize inspect integrate itemize
    localize negate normalize number observe offer omit pair phrase
    pinpoint populate predicate prioritize process proofread quantify
    question quote recount rectify relate reword segment sequence
    shorten spell standardize substitute synthesize tabulate trace
    transcribe trim update value weigh
    """.split()
)

STOPWORDS = frozenset(
    """
    a about above after again against all am an and any are as at be
    because been before being below between both but by could did do
    does doing down during each few for from further had has have
    having he her here hers herself him himself his how i if in into
    is it its itself just me more most my myself no nor not now of off
    on once only or other our ours ourselves out over own same she
    should so some such than that the their theirs them themselves
    then there these they this those through to too under until up
    very was we were what when where which while who whom why will
    with you your yours yourself yourselves given following task please
    """.split()
)
