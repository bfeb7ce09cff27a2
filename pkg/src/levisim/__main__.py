from levisim.cli import main

main()
