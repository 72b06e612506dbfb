"""Print the doubling-trick workflow as a Mermaid diagram."""
from drivers.paramfree import DoublingContext, build_workflow
from linear_fa.features import identity_features
from mdp.generators import gen_garnet
from samplers.stream import SampleStream


def main():
    """Build the workflow on a throwaway instance and write its Mermaid source."""
    mdp = gen_garnet(3, 2, 3, seed=0)
    context = DoublingContext(
        stream=SampleStream(mdp, seed=0),
        fmap=identity_features(mdp.n_pairs),
        epsilon=1.0,
        delta=0.1,
        f=0.5,
        underline_kappa=0.25,
    )
    app = build_workflow(context)

    # Mermaid text renders on GitHub and needs no network access
    mermaid = app.get_graph().draw_mermaid()

    with open("workflow.mmd", "w") as f:
        f.write(mermaid)

    print("✓ Workflow diagram saved to workflow.mmd")

if __name__ == "__main__":
    main()
