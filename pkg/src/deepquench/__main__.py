from deepquench.cli import main

main()
